"""Main entry point for rae-xmc."""

from .cli import main

if __name__ == "__main__":
    main()
