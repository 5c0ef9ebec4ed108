import sys

from dnalloc.cli import main

sys.exit(main())
