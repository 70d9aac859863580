import sys

from checkin_dp.cli import main

sys.exit(main())
