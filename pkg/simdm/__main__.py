"""Entry point for running the simdm CLI as a module."""

from simdm.cli import main

if __name__ == "__main__":
    raise SystemExit(main())
