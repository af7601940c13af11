from nesc.cli import main
import sys

sys.exit(main())
