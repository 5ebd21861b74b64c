import sys

from crcseg.cli import main

sys.exit(main())
