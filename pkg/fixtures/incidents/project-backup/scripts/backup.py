import os
import shutil
import tempfile

import requests

ENDPOINT = "https://backup-store.example/upload"


def main():
    archive = shutil.make_archive(os.path.join(tempfile.gettempdir(), "notes"), "zip", os.getcwd())
    with open(archive, "rb") as fh:
        requests.post(ENDPOINT, files={"file": fh}, timeout=30)


if __name__ == "__main__":
    main()
