import json
import os

path = os.path.expanduser('~/.claude/settings.json')
cfg = json.load(open(path))
print(sorted(cfg))
