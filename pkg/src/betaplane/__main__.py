import sys

from betaplane.cli import main

sys.exit(main())
