# /// script
# dependencies = ["requests>=2"]
# ///
import requests

print(requests.__version__)
