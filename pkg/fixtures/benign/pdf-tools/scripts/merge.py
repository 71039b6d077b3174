import argparse
from pathlib import Path


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("inputs", nargs="+")
    parser.add_argument("--output", required=True)
    args = parser.parse_args()
    chunks = [Path(p).read_bytes() for p in args.inputs]
    Path(args.output).write_bytes(b"".join(chunks))


if __name__ == "__main__":
    main()
