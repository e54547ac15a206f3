"""Allow ``python -m drmfpca``."""

import sys

from .cli import main

sys.exit(main())
