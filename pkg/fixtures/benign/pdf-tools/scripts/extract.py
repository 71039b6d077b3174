import argparse
from pathlib import Path


def extract(src: Path, out_dir: Path) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    target = out_dir / (src.stem + ".txt")
    data = src.read_bytes()
    text = data.decode("latin-1", "ignore")
    target.write_text(text)
    return target


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--input", required=True)
    parser.add_argument("--output", required=True)
    args = parser.parse_args()
    print(extract(Path(args.input), Path(args.output)))


if __name__ == "__main__":
    main()
