import sys

from ontorag.cli import main

sys.exit(main())
