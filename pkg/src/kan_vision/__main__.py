"""Allow ``python -m kan_vision``."""

from .cli import main

if __name__ == "__main__":
    main()
