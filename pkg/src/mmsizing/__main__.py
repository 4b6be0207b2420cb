import sys

from mmsizing.cli import main

sys.exit(main())
