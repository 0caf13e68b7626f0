# main.py

import sys

from dotenv import load_dotenv

from dynamic_dps.cli import main as cli_main


def main() -> int:
    load_dotenv()
    return cli_main()


if __name__ == "__main__":
    sys.exit(main())
