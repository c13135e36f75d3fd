import re
import sys

import tomli

# Read local version from pyproject.toml
with open("pyproject.toml", "rb") as f:
  pyproject = tomli.load(f)
  local_version = pyproject["project"]["version"]

# Version exported by the package
with open("src/semiclab/__init__.py", encoding="utf-8") as f:
  match = re.search(r'__version__: str = "([^"]+)"', f.read())
  package_version = match.group(1) if match else None

# Latest released entry in the changelog
with open("CHANGELOG.md", encoding="utf-8") as f:
  match = re.search(r"^## \[(\d+\.\d+\.\d+)\]", f.read(), re.MULTILINE)
  changelog_version = match.group(1) if match else None

if package_version != local_version:
  sys.exit(f"❌ semiclab.__version__ is {package_version}, pyproject.toml says {local_version}")
if changelog_version != local_version:
  sys.exit(f"❌ CHANGELOG.md tops out at {changelog_version}, pyproject.toml says {local_version}")
print(f"✅ Version {local_version} is consistent across pyproject.toml, the package and the changelog")
