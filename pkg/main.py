#!/usr/bin/env python3
"""
Main entry point for cpkit when run from a source checkout
"""
import sys

from cpkit.cli import main

if __name__ == '__main__':
    sys.exit(main())
