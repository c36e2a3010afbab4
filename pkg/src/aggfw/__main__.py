import sys

from aggfw.harness.cli import main

sys.exit(main())
