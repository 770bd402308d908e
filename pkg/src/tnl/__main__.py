import sys

from tnl.cli import main

sys.exit(main())
