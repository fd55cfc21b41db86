import sys

from hyperprop.cli import main

sys.exit(main())
