import sys

print(sys.stdin.read()[:2000])
