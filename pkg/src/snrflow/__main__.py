"""Entry point for python -m snrflow"""

from snrflow.cli.main import main

if __name__ == "__main__":
    main()
