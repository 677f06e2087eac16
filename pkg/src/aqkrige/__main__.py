import sys

from aqkrige.cli import main

sys.exit(main())
