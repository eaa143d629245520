"""
torus_forge/__main__.py — Entry point: python3 -m torus_forge
"""
import sys

from torus_forge.cli import main

if __name__ == "__main__":
    sys.exit(main())
