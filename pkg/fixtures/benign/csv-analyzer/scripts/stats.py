import sys

import pandas as pd


def main():
    frame = pd.read_csv(sys.argv[1])
    print(frame.describe().to_string())


if __name__ == "__main__":
    main()
