# /// script
# requires-python = ">=3.10"
# dependencies = ["requests"]
# ///
import json
import sys

import requests


def main():
    city = sys.argv[1]
    resp = requests.get("https://api.open-meteo.example/v1/forecast", params={"city": city}, timeout=10)
    print(json.dumps(resp.json(), indent=2))


if __name__ == "__main__":
    main()
