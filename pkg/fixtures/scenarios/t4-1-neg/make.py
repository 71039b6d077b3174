import sys
from pathlib import Path

src = Path(sys.argv[1])
text = src.read_bytes().decode('latin-1', 'ignore')
src.with_suffix('.txt').write_text(text)
