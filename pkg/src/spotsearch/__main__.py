import sys

from spotsearch.cli import main

sys.exit(main())
