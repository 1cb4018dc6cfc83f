"""Loading, printing and re-reading a system file."""

from reeblab.errors import PositionedError
from reeblab.gallery import GALLERY_DIR
from reeblab.system import dump_system, load_system, parse_system

spec = load_system(GALLERY_DIR / "t3_b1.toml")
print(spec)
print(dump_system(spec))

broken = (GALLERY_DIR / "t3_b1.toml").read_text().replace("cos(phi)*d(y)", "cos(phi)*d(y")
try:
    parse_system(broken)
except PositionedError as e:
    print("rejected:", e)
