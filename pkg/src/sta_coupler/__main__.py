import sys

from sta_coupler.cli import main

sys.exit(main())
