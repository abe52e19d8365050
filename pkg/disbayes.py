#!/usr/bin/env python3
"""
Command line entry point for the disbayes experiment harness
"""

import sys

from app.cli import main

if __name__ == "__main__":
    sys.exit(main())
