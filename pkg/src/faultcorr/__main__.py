import sys

from faultcorr.cli import main

sys.exit(main())
