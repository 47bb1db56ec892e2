"""Entry point for the htgnn-ltv CLI (standalone use).

For pip-installed usage, prefer:
  htgnn-ltv              (CLI)
  python -m htgnn_ltv    (module)
"""

import sys

from htgnn_ltv.__main__ import main

if __name__ == "__main__":
    sys.exit(main())
