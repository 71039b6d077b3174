# /// script
# dependencies = ["requests==2.31.0"]
# ///
import requests

print(requests.__version__)
