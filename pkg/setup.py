"""
Setup script for the N-best Reranking Toolkit.
Installs the requirements, creates .env and checks that the stack imports.
"""
import subprocess
import sys
from pathlib import Path

STACK = ["numpy", "scipy", "pandas", "plotly", "dotenv"]


def check_python_version():
    """argparse.BooleanOptionalAction needs Python 3.9."""
    version = sys.version_info
    if version < (3, 9):
        print(f"❌ Python 3.9+ required, found {version.major}.{version.minor}")
        return False
    print(f"✅ Python {version.major}.{version.minor}.{version.micro} detected")
    return True


def install_dependencies():
    print("📦 Installing requirements...")
    result = subprocess.run([sys.executable, "-m", "pip", "install", "-r", "requirements.txt"],
                            capture_output=True, text=True)
    if result.returncode != 0:
        print(f"❌ pip failed: {result.stderr}")
        return False
    print("✅ Requirements installed")
    return True


def setup_environment():
    """Create .env from the template so RERANK_* defaults can be edited in one place."""
    env_file, env_example = Path(".env"), Path(".env.example")
    if env_file.exists():
        print("✅ .env file already exists")
    elif env_example.exists():
        env_file.write_text(env_example.read_text())
        print("✅ Created .env file from template")
    return True


def verify_imports():
    for module in STACK:
        try:
            __import__(module)
        except ImportError as e:
            print(f"❌ Failed to import {module}: {e}")
            return False
    print(f"✅ Imported {', '.join(STACK)}")
    return True


def main():
    print("🔧 N-best Reranking Toolkit Setup")
    print("=" * 50)
    for step in (check_python_version, install_dependencies, setup_environment, verify_imports):
        if not step():
            print(f"❌ Setup failed at {step.__name__}")
            return 1
    print("\n🚀 Next: python app.py --help, python demo.py or pytest")
    return 0


if __name__ == "__main__":
    sys.exit(main())
