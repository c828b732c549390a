import sys

from coshflows.cli import main

sys.exit(main())
