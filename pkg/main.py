#!/usr/bin/env python3
"""
Main entry point for the ppcd command-line tool.
"""
import sys
import os

# Add parent directory to path for imports
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from harness import cli


def main():
    """Run one command; logging is configured by the CLI."""
    return cli.main()


if __name__ == "__main__":
    sys.exit(main())
