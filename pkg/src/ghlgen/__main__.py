import sys

from ghlgen.cli import main

sys.exit(main())
