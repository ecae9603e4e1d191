import sys

from kernadapt.cli import main

sys.exit(main())
