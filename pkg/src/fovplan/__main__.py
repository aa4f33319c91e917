import sys

from fovplan.cli import main

sys.exit(main())
