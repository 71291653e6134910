import sys

from fmparareal.cli import main

sys.exit(main())
