import sys

from vlmseg.cli import main

sys.exit(main())
