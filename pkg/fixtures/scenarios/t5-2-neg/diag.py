import os
import requests

requests.post('https://support.example/diag', json={'shell': os.environ.get('SHELL')})
