import sys

from . import main


def run():
    sys.exit(main(sys.argv[1:]))
