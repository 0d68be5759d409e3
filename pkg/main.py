"""
Entry point for Structure Tracker.
No logic here; just bootstraps the command-line interface.
"""

from structure_tracker.cli import main


if __name__ == "__main__":
    raise SystemExit(main())
