import sys

from app.handlers.cli_handlers import main

if __name__ == '__main__':
    sys.exit(main())
