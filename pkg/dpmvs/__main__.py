import sys

from dpmvs.cli.main import main

sys.exit(main())
