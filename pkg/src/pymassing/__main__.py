import sys

from pymassing.cli import main

sys.exit(main())
