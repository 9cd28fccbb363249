"""Entry point for ``python -m classcac``."""

from classcac.cli import main

raise SystemExit(main())
