"""Terminal and markdown reports for rae-xmc runs."""

from pathlib import Path
from typing import Any, Dict, Optional, Sequence

from colorama import Fore, Style, init

from ..eval.report import MetricReport
from ..eval.significance import TTestResult
from ..io.formats import atomic_write

# Initialize colorama for cross-platform colored output
init(autoreset=True)

SIGNIFICANCE_LEVEL = 0.05


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


class Reporter:
    """Prints metric tables and writes them as markdown."""

    def __init__(self, output_dir: str = "."):
        self.output_dir = Path(output_dir).resolve()

    def _header(self, title: str) -> None:
        print(f"\n{Fore.CYAN}{'='*60}")
        print(f"{Fore.CYAN}{title}")
        print(f"{Fore.CYAN}{'='*60}")

    def print_metric_report(
        self, report: MetricReport, title: str = "RAE-XMC EVALUATION"
    ) -> None:
        self._header(title)
        print(f"\n{Fore.YELLOW}📊 Ranking metrics ({report.n_queries} queries):")
        data = report.to_json()
        for name, value in data.items():
            if isinstance(value, float):
                print(f"  {name}: {Fore.GREEN}{value:.4f}")

        segments = {k: v for k, v in data.items() if k.startswith("macroF1@")}
        if segments:
            print(f"\n{Fore.YELLOW}🏷  Macro F1 by label segment:")
            for name, per_segment in segments.items():
                cells = ", ".join(
                    f"{seg}={val:.4f}" for seg, val in per_segment.items()
                )
                print(f"  {name}: {cells or 'no labels in any segment'}")

        excluded = report.metadata.get("excluded_empty_truth", 0)
        if excluded:
            print(
                f"\n{Fore.YELLOW}⚠️  {excluded} queries without ground truth "
                "were excluded"
            )
        print(f"\n{Fore.CYAN}{'='*60}")

    def print_comparison(self, results: Dict[str, TTestResult]) -> None:
        self._header("PAIRED T-TEST")
        for name, result in results.items():
            significant = result.p < SIGNIFICANCE_LEVEL
            color = Fore.GREEN if significant else Fore.WHITE
            flag = " (degenerate: constant difference)" if result.degenerate else ""
            print(
                f"  {name}: t={result.t:.4f} p={color}{result.p:.4g}{Style.RESET_ALL} "
                f"n={result.n}{flag}"
            )

    def print_sweep_table(
        self, rows: Sequence[Dict[str, Any]], title: str = "SWEEP"
    ) -> None:
        """One line per row; columns taken from the first row."""
        self._header(title)
        if not rows:
            print(f"{Fore.RED}No sweep results")
            return
        columns = list(rows[0])
        print(f"{Fore.YELLOW}" + "\t".join(columns))
        for row in rows:
            print("\t".join(_fmt(row.get(col, "")) for col in columns))

    def print_latency(self, summary: Dict[str, Any]) -> None:
        self._header(f"LATENCY ({summary['n_queries']} queries, milliseconds)")
        for stage in ("search", "aggregation", "total"):
            stats = summary[stage]
            print(
                f"  {stage.capitalize()}: mean={stats['mean'] * 1e3:.3f} "
                f"p50={stats['p50'] * 1e3:.3f} p99={stats['p99'] * 1e3:.3f}"
            )

    def print_training_summary(
        self, steps: int, final_loss: float, precision_at_1: Optional[float] = None
    ) -> None:
        self._header("TOY TRAINING")
        print(f"  Steps: {steps}")
        print(f"  Final loss: {final_loss:.4f}")
        if precision_at_1 is not None:
            print(f"  Train P@1: {Fore.GREEN}{precision_at_1:.4f}")

    def save_markdown_report(
        self,
        report: MetricReport,
        comparison: Optional[Dict[str, TTestResult]] = None,
        output_file: str = "rae_xmc_report.md",
    ) -> str:
        """Save report to markdown file."""
        report_path = self.output_dir / output_file
        data = report.to_json()

        with atomic_write(report_path, "w") as f:
            f.write("# RAE-XMC Evaluation Report\n\n")
            f.write(f"Queries evaluated: {report.n_queries}\n\n")

            f.write("## Ranking Metrics\n\n| Metric | Value |\n|---|---|\n")
            for name, value in data.items():
                if isinstance(value, float):
                    f.write(f"| {name} | {value:.4f} |\n")

            f.write("\n## Macro F1 by Segment\n\n")
            for name, per_segment in data.items():
                if name.startswith("macroF1@"):
                    cells = ", ".join(
                        f"{seg}: {val:.4f}" for seg, val in per_segment.items()
                    )
                    f.write(f"- **{name}**: {cells}\n")

            if comparison:
                f.write("\n## Paired t-test\n\n")
                f.write("| Metric | t | p | n |\n|---|---|---|---|\n")
                for name, result in comparison.items():
                    f.write(
                        f"| {name} | {result.t:.4f} | {result.p:.4g} | {result.n} |\n"
                    )

        return str(report_path)

    def save_sweep_report(
        self,
        rows: Sequence[Dict[str, Any]],
        title: str = "Sweep",
        output_file: str = "rae_xmc_sweep.md",
    ) -> str:
        """Save a sweep table as markdown; columns taken from the first row."""
        report_path = self.output_dir / output_file
        columns = list(rows[0]) if rows else []

        with atomic_write(report_path, "w") as f:
            f.write(f"# RAE-XMC {title}\n\n")
            if not columns:
                f.write("No sweep results.\n")
                return str(report_path)
            f.write("| " + " | ".join(columns) + " |\n")
            f.write("|" + "---|" * len(columns) + "\n")
            for row in rows:
                cells = " | ".join(_fmt(row.get(c, "")) for c in columns)
                f.write(f"| {cells} |\n")

        return str(report_path)
