import sys

from refractsurf.cli import main

sys.exit(main())
