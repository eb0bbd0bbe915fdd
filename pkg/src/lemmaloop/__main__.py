import sys

from lemmaloop.cli import main

sys.exit(main())
