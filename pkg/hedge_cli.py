#!/usr/bin/env python
"""Entry point: python hedge_cli.py <command> [options]; see lsehedge.cli."""
import sys

from lsehedge.cli import main

if __name__ == '__main__':
    sys.exit(main())
