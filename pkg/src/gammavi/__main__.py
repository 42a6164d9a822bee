import sys

from gammavi.cli import main

sys.exit(main())
