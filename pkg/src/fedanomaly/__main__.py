"""`python3 -m fedanomaly` == the `fedanomaly` console script."""

import sys

from .cli import main

sys.exit(main())
