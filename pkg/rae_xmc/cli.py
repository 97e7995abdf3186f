"""Command-line interface for rae-xmc."""

import functools
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Callable, List, Optional

import click

from rae_xmc.ann.hnsw import build_index
from rae_xmc.core.config_loader import ConfigLoader
from rae_xmc.core.config_types import InferenceConfig, LossKind, PredictionMode
from rae_xmc.core.memory import build_knowledge_memory
from rae_xmc.core.reporter import Reporter
from rae_xmc.eval.report import compare_reports, evaluate
from rae_xmc.inference.diagnostics import latency_probe, retrieval_source_mix
from rae_xmc.inference.predictor import Predictor, predict_ova_knn
from rae_xmc.io.formats import (
    atomic_write,
    read_embeddings,
    read_encoder,
    read_features,
    read_labels,
    read_predictions,
    write_embeddings,
    write_encoder,
    write_index,
    write_loss_curve,
    write_predictions,
)
from rae_xmc.io.manifest import load_artifacts, write_manifest
from rae_xmc.io.synthetic import (
    make_separable_dataset,
    make_synthetic_fixture,
    read_training_dataset,
)
from rae_xmc.trainer.loop import precision_at_1, train
from rae_xmc.utils.exceptions import RaeXmcError
from rae_xmc.utils.logger import setup_logger

logger = logging.getLogger(__name__)

EXISTING_FILE = click.Path(exists=True, dir_okay=False, path_type=Path)
OUTPUT_FILE = click.Path(dir_okay=False, path_type=Path)
LAMBDA_HELP = "Instance/label value weight [default: 0.5]"
KS_HELP = "Comma-separated cutoffs [default: 1,5,100]"


def _parse_list(text: Optional[str], cast: Callable, name: str) -> Optional[List]:
    if text is None:
        return None
    try:
        return [cast(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as e:
        raise click.BadParameter(
            f"expected a comma-separated list: {text}", param_hint=name
        ) from e


def guarded(command: Callable) -> Callable:
    """Translate rae-xmc errors into one-line messages and stable exit codes."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        verbose = click.get_current_context().find_root().params.get("verbose", False)
        try:
            return command(*args, **kwargs)
        except RaeXmcError as e:
            click.echo(f"❌ {type(e).__name__}: {e}")
            sys.exit(e.exit_code)
        except KeyboardInterrupt:
            click.echo("\n⚠️  Interrupted by user")
            sys.exit(130)
        except (click.ClickException, click.exceptions.Exit):
            raise
        except Exception as e:
            click.echo(f"❌ Unexpected error: {str(e)}")
            if verbose:
                import traceback

                click.echo(traceback.format_exc())
            sys.exit(1)

    return wrapper


@click.group()
@click.option(
    "--config",
    "-c",
    type=EXISTING_FILE,
    help="Configuration file merged over the packaged defaults (.rae-xmc.yaml)",
)
@click.option("--verbose", "-v", is_flag=True, help="Enable verbose output")
@click.option(
    "--log-dir",
    type=click.Path(file_okay=False, path_type=Path),
    help="Directory for detailed log files",
)
@click.version_option(package_name="rae-xmc")
@click.pass_context
def main(
    ctx: click.Context, config: Optional[Path], verbose: bool, log_dir: Optional[Path]
) -> None:
    """
    RAE-XMC - retrieval-augmented extreme multi-label inference.

    Build a joint instance+label index, predict by retrieving and
    aggregating label values, and evaluate the rankings.
    """
    setup_logger(
        level=logging.INFO if verbose else logging.WARNING,
        log_dir=log_dir,
        run_name=ctx.invoked_subcommand,
    )
    try:
        ctx.obj = ConfigLoader(config, search_dir=Path.cwd())
    except RaeXmcError as e:
        click.echo(f"❌ Configuration error: {str(e)}")
        sys.exit(e.exit_code)


def _inference_options(command: Callable) -> Callable:
    options = [
        click.option(
            "--index",
            "index_path",
            type=EXISTING_FILE,
            help="HNSW index file (default: from manifest)",
        ),
        click.option(
            "--manifest",
            type=EXISTING_FILE,
            required=True,
            help="Memory manifest written by build-index",
        ),
        click.option(
            "--queries", type=EXISTING_FILE, required=True, help="Query embedding file"
        ),
        click.option(
            "--b", "b", type=int, help="Retrieved keys per query [default: 200]"
        ),
        click.option("--tau", type=float, help="Softmax temperature [default: 0.04]"),
        click.option(
            "--efs", "ef_search", type=int, help="HNSW search queue size [default: 300]"
        ),
        click.option("--topk", type=int, help="Labels kept per query [default: 100]"),
        click.option(
            "--threads", type=int, default=1, show_default=True, help="Query threads"
        ),
        click.option(
            "--preset",
            type=str,
            help="Named lambda preset from the configuration (e.g. low_lambda)",
        ),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def _load(manifest: Path, index_path: Optional[Path], cfg: InferenceConfig):
    artifacts = load_artifacts(manifest, index_path)
    memory = build_knowledge_memory(
        artifacts.keys_x, artifacts.keys_z, artifacts.labels, cfg.lam, cfg.tau
    )
    return artifacts, memory


@main.command("build-index")
@click.option(
    "--keys-x",
    type=EXISTING_FILE,
    required=True,
    help="Training instance embeddings",
)
@click.option("--keys-z", type=EXISTING_FILE, required=True, help="Label embeddings")
@click.option(
    "--labels", type=EXISTING_FILE, required=True, help="Training label file"
)
@click.option("--out", type=OUTPUT_FILE, required=True, help="Index file to write")
@click.option(
    "--manifest", type=OUTPUT_FILE, help="Manifest path [default: <out>.json]"
)
@click.option("--m", "m", type=int, help="Graph degree M [default: 64]")
@click.option(
    "--efc",
    "ef_construction",
    type=int,
    help="Construction queue size [default: 500]",
)
@click.option("--seed", type=int, help="Level assignment seed [default: 0]")
@click.option(
    "--threads", "num_threads", type=int, help="Insertion threads [default: 1]"
)
@click.pass_obj
@guarded
def build_index_command(
    loader: ConfigLoader,
    keys_x: Path,
    keys_z: Path,
    labels: Path,
    out: Path,
    manifest: Optional[Path],
    m: Optional[int],
    ef_construction: Optional[int],
    seed: Optional[int],
    num_threads: Optional[int],
) -> None:
    """Build the HNSW index over [instances; labels] and write its manifest."""
    cfg = loader.index_config(
        m=m, ef_construction=ef_construction, seed=seed, num_threads=num_threads
    )
    x_emb = read_embeddings(keys_x)
    z_emb = read_embeddings(keys_z)
    y = read_labels(labels)
    memory = build_knowledge_memory(x_emb, z_emb, y, lam=0.5, tau=0.04)

    click.echo(
        f"🔧 Indexing {memory.keys.rows} keys "
        f"(N={memory.n_instances}, L={memory.n_labels})"
    )
    index = build_index(
        memory.keys, cfg.m, cfg.ef_construction, cfg.seed, cfg.num_threads
    )
    write_index(out, index)
    manifest = manifest or out.with_suffix(".json")
    write_manifest(
        manifest,
        out,
        keys_x,
        keys_z,
        labels,
        index,
        n_instances=memory.n_instances,
        n_labels=memory.n_labels,
        dim=memory.dim,
    )
    click.echo(f"✅ Index saved to: {out}")
    click.echo(f"✅ Manifest saved to: {manifest}")


@main.command("predict")
@_inference_options
@click.option("--lambda", "lam", type=float, help=LAMBDA_HELP)
@click.option(
    "--mode",
    type=click.Choice([mode.value for mode in PredictionMode]),
    default=PredictionMode.RAE.value,
    show_default=True,
    help="Joint retrieval or the separate kNN + label-retrieval combination",
)
@click.option(
    "--out", type=OUTPUT_FILE, required=True, help="Predictions TSV to write"
)
@click.pass_obj
@guarded
def predict_command(
    loader: ConfigLoader,
    index_path: Optional[Path],
    manifest: Path,
    queries: Path,
    b: Optional[int],
    tau: Optional[float],
    ef_search: Optional[int],
    topk: Optional[int],
    threads: int,
    preset: Optional[str],
    lam: Optional[float],
    mode: str,
    out: Path,
) -> None:
    """Predict ranked labels for every query embedding."""
    cfg = loader.inference_config(
        preset, b=b, tau=tau, lam=lam, ef_search=ef_search, topk=topk
    )
    artifacts, memory = _load(manifest, index_path, cfg)
    q = read_embeddings(queries)

    if PredictionMode(mode) is PredictionMode.OVA_KNN:
        params = artifacts.manifest["index"]
        build = functools.partial(
            build_index,
            m=params["m"],
            ef_construction=params["ef_construction"],
            seed=params.get("seed") or 0,
        )
        predictions = predict_ova_knn(
            memory, build(memory.instance_keys()), build(memory.label_keys()), q, cfg
        )
    else:
        predictions = Predictor(memory, artifacts.index, threads).predict(q, cfg)

    write_predictions(out, predictions)
    click.echo(f"✅ Predictions for {len(predictions)} queries saved to: {out}")


@main.command("evaluate")
@click.option("--pred", type=EXISTING_FILE, required=True, help="Predictions TSV")
@click.option("--truth", type=EXISTING_FILE, required=True, help="Test label file")
@click.option(
    "--train-labels",
    type=EXISTING_FILE,
    required=True,
    help="Training label file (segment frequencies)",
)
@click.option("--ks", type=str, help=KS_HELP)
@click.option(
    "--segments",
    type=str,
    help="Head,torso,tail frequency thresholds [default: 1000,100,10]",
)
@click.option(
    "--compare",
    type=EXISTING_FILE,
    help="Second predictions TSV for a paired t-test",
)
@click.option("--out", type=OUTPUT_FILE, help="Write the JSON report here")
@click.option("--report", type=OUTPUT_FILE, help="Save markdown report to file")
@click.pass_obj
@guarded
def evaluate_command(
    loader: ConfigLoader,
    pred: Path,
    truth: Path,
    train_labels: Path,
    ks: Optional[str],
    segments: Optional[str],
    compare: Optional[Path],
    out: Optional[Path],
    report: Optional[Path],
) -> None:
    """Compute P@k, R@k and segment macro F1@k for a predictions file."""
    cfg = loader.eval_config(
        _parse_list(ks, int, "--ks"), _parse_list(segments, int, "--segments")
    )
    truths = read_labels(truth)
    train_y = read_labels(train_labels)
    result = evaluate(read_predictions(pred, truths.n_labels), truths, train_y, cfg)

    payload = result.to_json()
    comparison = None
    if compare:
        other_preds = read_predictions(compare, truths.n_labels)
        other = evaluate(other_preds, truths, train_y, cfg)
        comparison = compare_reports(result, other)
        payload["comparison"] = {
            "against": str(compare),
            "metrics": {name: asdict(t) for name, t in comparison.items()},
        }

    reporter = Reporter(".")
    reporter.print_metric_report(result)
    if comparison:
        reporter.print_comparison(comparison)
    if out:
        with atomic_write(out, "w") as handle:
            json.dump(payload, handle, indent=2)
        click.echo(f"📄 Metrics saved to: {out}")
    if report:
        path = reporter.save_markdown_report(
            result, comparison, output_file=str(report)
        )
        click.echo(f"📄 Report saved to: {path}")


def _sweep_row(report, segments_k: int) -> dict:
    row = {
        name: value
        for name, value in report.to_json().items()
        if isinstance(value, float)
    }
    by_cutoff = sorted(report.macro_f1_at.items(), key=lambda kv: kv[0][1])
    for (segment, k), value in by_cutoff:
        if k == segments_k:
            row[f"F1@{k}[{segment.value}]"] = value
    return row


@main.command("sweep-lambda")
@_inference_options
@click.option("--truth", type=EXISTING_FILE, required=True, help="Test label file")
@click.option(
    "--lambdas",
    type=str,
    help="Comma-separated lambda values [default: from configuration]",
)
@click.option("--ks", type=str, help=KS_HELP)
@click.option("--segments", type=str, help="Head,torso,tail frequency thresholds")
@click.option("--out", type=OUTPUT_FILE, help="Write the sweep table as JSON")
@click.option(
    "--report", type=OUTPUT_FILE, help="Save the sweep table as markdown"
)
@click.pass_obj
@guarded
def sweep_lambda_command(
    loader: ConfigLoader,
    index_path: Optional[Path],
    manifest: Path,
    queries: Path,
    b: Optional[int],
    tau: Optional[float],
    ef_search: Optional[int],
    topk: Optional[int],
    threads: int,
    preset: Optional[str],
    truth: Path,
    lambdas: Optional[str],
    ks: Optional[str],
    segments: Optional[str],
    out: Optional[Path],
    report: Optional[Path],
) -> None:
    """Evaluate many lambdas from a single retrieval pass."""
    cfg = loader.inference_config(preset, b=b, tau=tau, ef_search=ef_search, topk=topk)
    eval_cfg = loader.eval_config(
        _parse_list(ks, int, "--ks"), _parse_list(segments, int, "--segments")
    )
    values = _parse_list(lambdas, float, "--lambdas") or loader.sweep_lambdas()
    artifacts, memory = _load(manifest, index_path, cfg)
    truths = read_labels(truth)
    predictor = Predictor(memory, artifacts.index, threads)
    results = predictor.retrieve(read_embeddings(queries), cfg.b, cfg.ef_search)

    rows = []
    for lam in values:
        preds = predictor.aggregate(results, cfg.tau, lam, cfg.topk)
        metrics = evaluate(preds, truths, artifacts.labels, eval_cfg)
        rows.append({"lambda": lam, **_sweep_row(metrics, min(eval_cfg.ks))})

    Reporter(".").print_sweep_table(rows, title="LAMBDA SWEEP")
    _dump_rows(out, rows, report, "Lambda Sweep")


@main.command("sweep-b")
@_inference_options
@click.option("--lambda", "lam", type=float, help=LAMBDA_HELP)
@click.option("--truth", type=EXISTING_FILE, required=True, help="Test label file")
@click.option(
    "--bs",
    type=str,
    help="Comma-separated b values [default: powers of two up to N+L]",
)
@click.option("--ks", type=str, help=KS_HELP)
@click.option("--out", type=OUTPUT_FILE, help="Write the sweep table as JSON")
@click.option(
    "--report", type=OUTPUT_FILE, help="Save the sweep table as markdown"
)
@click.pass_obj
@guarded
def sweep_b_command(
    loader: ConfigLoader,
    index_path: Optional[Path],
    manifest: Path,
    queries: Path,
    b: Optional[int],
    tau: Optional[float],
    ef_search: Optional[int],
    topk: Optional[int],
    threads: int,
    preset: Optional[str],
    lam: Optional[float],
    truth: Path,
    bs: Optional[str],
    ks: Optional[str],
    out: Optional[Path],
    report: Optional[Path],
) -> None:
    """Precision and retrieved-key source mix as the retrieval depth b grows."""
    cfg = loader.inference_config(
        preset, b=b, tau=tau, lam=lam, ef_search=ef_search, topk=topk
    )
    eval_cfg = loader.eval_config(_parse_list(ks, int, "--ks"))
    artifacts, memory = _load(manifest, index_path, cfg)
    truths = read_labels(truth)
    q = read_embeddings(queries)
    n_keys = memory.keys.rows
    depths = _parse_list(bs, int, "--bs") or [
        1 << i for i in range(n_keys.bit_length()) if 1 << i <= n_keys
    ]

    predictor = Predictor(memory, artifacts.index, threads)
    rows = []
    for depth in depths:
        results = predictor.retrieve(q, depth, max(cfg.ef_search, depth))
        preds = predictor.aggregate(results, cfg.tau, cfg.lam, cfg.topk)
        metrics = evaluate(preds, truths, artifacts.labels, eval_cfg)
        inst, label = retrieval_source_mix(memory, results)
        rows.append(
            {
                "b": depth,
                **{f"P@{k}": v for k, v in sorted(metrics.p_at.items())},
                "instance_fraction": inst,
                "label_fraction": label,
                "instance_to_label": inst / label if label else float("inf"),
            }
        )

    Reporter(".").print_sweep_table(rows, title="RETRIEVAL DEPTH SWEEP")
    _dump_rows(out, rows, report, "Retrieval Depth Sweep")


def _dump_rows(
    out: Optional[Path], rows: List[dict], report: Optional[Path], title: str
) -> None:
    if out:
        with atomic_write(out, "w") as handle:
            json.dump(rows, handle, indent=2)
        click.echo(f"📄 Sweep saved to: {out}")
    if report:
        path = Reporter(".").save_sweep_report(rows, title, output_file=str(report))
        click.echo(f"📄 Report saved to: {path}")


@main.command("latency")
@_inference_options
@click.option("--lambda", "lam", type=float, help=LAMBDA_HELP)
@click.pass_obj
@guarded
def latency_command(
    loader: ConfigLoader,
    index_path: Optional[Path],
    manifest: Path,
    queries: Path,
    b: Optional[int],
    tau: Optional[float],
    ef_search: Optional[int],
    topk: Optional[int],
    threads: int,
    preset: Optional[str],
    lam: Optional[float],
) -> None:
    """Per-query search and aggregation wall time."""
    cfg = loader.inference_config(
        preset, b=b, tau=tau, lam=lam, ef_search=ef_search, topk=topk
    )
    artifacts, memory = _load(manifest, index_path, cfg)
    report = latency_probe(memory, artifacts.index, read_embeddings(queries), cfg)
    Reporter(".").print_latency(report.summary())


@main.command("train-toy")
@click.option(
    "--features", type=EXISTING_FILE, required=True, help="Instance features (.npz)"
)
@click.option(
    "--label-features",
    type=EXISTING_FILE,
    required=True,
    help="Label features (.npz)",
)
@click.option(
    "--labels", type=EXISTING_FILE, required=True, help="Training label file"
)
@click.option(
    "--out", type=OUTPUT_FILE, required=True, help="Encoder checkpoint to write"
)
@click.option("--curve", type=OUTPUT_FILE, help="Loss curve CSV [default: <out>.csv]")
@click.option("--steps", "max_steps", type=int, help="Override train.max_steps")
@click.option(
    "--loss",
    type=click.Choice([kind.value for kind in LossKind]),
    help="Override train.loss",
)
@click.option("--seed", type=int, help="Override train.seed")
@click.pass_obj
@guarded
def train_toy_command(
    loader: ConfigLoader,
    features: Path,
    label_features: Path,
    labels: Path,
    out: Path,
    curve: Optional[Path],
    max_steps: Optional[int],
    loss: Optional[str],
    seed: Optional[int],
) -> None:
    """Train the linear toy encoder with mined hard negatives."""
    cfg = loader.train_config(max_steps=max_steps, loss=loss, seed=seed)
    dataset = read_training_dataset(features, label_features, labels)
    result = train(dataset, cfg)
    write_encoder(out, result.encoder)
    curve = curve or out.with_suffix(".csv")
    write_loss_curve(curve, result.curve)
    Reporter(".").print_training_summary(
        len(result.curve), result.final_loss, precision_at_1(result.encoder, dataset)
    )
    click.echo(f"✅ Checkpoint saved to: {out}")
    click.echo(f"✅ Loss curve saved to: {curve}")


@main.command("encode")
@click.option(
    "--checkpoint", type=EXISTING_FILE, required=True, help="Encoder checkpoint"
)
@click.option(
    "--features", type=EXISTING_FILE, required=True, help="Sparse features (.npz)"
)
@click.option(
    "--out", type=OUTPUT_FILE, required=True, help="Embedding file to write"
)
@guarded
def encode_command(checkpoint: Path, features: Path, out: Path) -> None:
    """Embed sparse features with a trained toy encoder."""
    encoder = read_encoder(checkpoint)
    embeddings = encoder.embed(read_features(features))
    write_embeddings(out, embeddings)
    click.echo(f"✅ {embeddings.rows} embeddings saved to: {out}")


@main.command("make-fixture")
@click.option(
    "--out-dir",
    type=click.Path(file_okay=False, path_type=Path),
    required=True,
)
@click.option(
    "--kind",
    type=click.Choice(["memory", "separable"]),
    default="memory",
    show_default=True,
    help="Embedding fixture for inference, or sparse data for the toy trainer",
)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option(
    "--n-head", type=int, default=5, show_default=True, help="Head labels (memory)"
)
@click.option(
    "--n-tail", type=int, default=40, show_default=True, help="Tail labels (memory)"
)
@click.option("--instances-per-head", type=int, default=30, show_default=True)
@click.option("--dim", type=int, default=32, show_default=True)
@click.option(
    "--n-instances",
    type=int,
    default=500,
    show_default=True,
    help="Instances (separable)",
)
@click.option(
    "--n-labels", type=int, default=50, show_default=True, help="Labels (separable)"
)
@guarded
def make_fixture_command(
    out_dir: Path,
    kind: str,
    seed: int,
    n_head: int,
    n_tail: int,
    instances_per_head: int,
    dim: int,
    n_instances: int,
    n_labels: int,
) -> None:
    """Write a seeded synthetic dataset."""
    if kind == "separable":
        make_separable_dataset(
            n_instances=n_instances, n_labels=n_labels, seed=seed, out_dir=out_dir
        )
    else:
        fixture = make_synthetic_fixture(
            seed, n_head, n_tail, instances_per_head, dim, out_dir
        )
        thresholds = ",".join(map(str, fixture.segments.thresholds))
        click.echo(f"💡 Suggested segments: {thresholds}")
    click.echo(f"✅ Fixture written to: {out_dir}")


if __name__ == "__main__":
    main()
