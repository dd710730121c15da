import sys

from harborsim.cli import main

sys.exit(main())
