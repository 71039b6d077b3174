# /// script
# dependencies = ["pillow==10.3.0"]
# ///
import argparse
from pathlib import Path

from PIL import Image


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("image")
    parser.add_argument("--width", type=int, default=800)
    args = parser.parse_args()
    src = Path(args.image)
    img = Image.open(src)
    ratio = args.width / img.width
    resized = img.resize((args.width, int(img.height * ratio)))
    dest = src.with_name(src.stem + "-small" + src.suffix)
    resized.save(dest)
    print(dest)


if __name__ == "__main__":
    main()
