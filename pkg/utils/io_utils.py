"""
File utilities shared by every command: compressed text I/O, atomic
artifact writes and run manifests.
"""
import os
import io
import gzip
import json
import hashlib
import logging
import platform
import tempfile
from contextlib import contextmanager
from typing import Dict, Iterable, List, Optional

logger = logging.getLogger(__name__)

MANIFEST_SUFFIX = ".manifest.json"


def open_text(path: str, mode: str = "r"):
    """
    Open a UTF-8 text file, decompressing or compressing by extension.

    Args:
        path (str): File path; a ``.gz`` suffix selects gzip streaming
        mode (str): ``"r"`` or ``"w"``

    Returns:
        file: Text stream with LF line endings
    """
    if path.endswith(".gz"):
        return io.TextIOWrapper(gzip.open(path, mode + "b"), encoding="utf-8", newline="\n")
    return open(path, mode, encoding="utf-8", newline="\n")


@contextmanager
def atomic_write(path: str):
    """
    Write a text artifact so the target path never holds partial content.

    The data goes to a temporary file in the target directory, which
    replaces the target only when the block exits cleanly.

    Args:
        path (str): Final artifact path (``.gz`` compresses)

    Yields:
        file: Writable text stream
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    suffix = ".gz" if path.endswith(".gz") else ""
    fd, tmp_path = tempfile.mkstemp(prefix=".tmp-", suffix=suffix, dir=directory)
    os.close(fd)
    try:
        if suffix:
            # mtime=0 keeps compressed artifacts byte-identical across runs
            raw = gzip.GzipFile(tmp_path, "wb", mtime=0)
            stream = io.TextIOWrapper(raw, encoding="utf-8", newline="\n")
        else:
            stream = open(tmp_path, "w", encoding="utf-8", newline="\n")
        with stream:
            yield stream
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


def file_sha256(path: str) -> str:
    """Hex SHA-256 of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def package_versions() -> Dict[str, str]:
    """Versions of the interpreter and numeric packages used for a run."""
    versions = {"python": platform.python_version()}
    for name in ("numpy", "scipy", "pandas"):
        try:
            module = __import__(name)
            versions[name] = getattr(module, "__version__", "unknown")
        except ImportError:
            versions[name] = "missing"
    return versions


def export_manifest_to_json(output_path: str, command: str, inputs: Iterable[str],
                            outputs: Iterable[str], seed: int, threads: int,
                            parameters: Optional[Dict] = None) -> str:
    """
    Export the run manifest that accompanies every artifact.

    Args:
        output_path (str): Artifact path; the manifest is written next to it
        command (str): Subcommand name
        inputs (iterable): Input file paths (hashed)
        outputs (iterable): Output file paths (hashed)
        seed (int): Random seed of the run
        threads (int): Worker count of the run
        parameters (dict): Hyperparameters worth recording

    Returns:
        str: Path of the manifest file
    """
    manifest = {
        "command": command,
        "seed": seed,
        "threads": threads,
        "inputs": [_describe_file(p) for p in inputs],
        "outputs": [_describe_file(p) for p in outputs],
        "parameters": parameters or {},
        "versions": package_versions(),
    }
    manifest_path = output_path + MANIFEST_SUFFIX
    with atomic_write(manifest_path) as f:
        f.write(json.dumps(manifest, indent=2, sort_keys=True, default=str))
        f.write("\n")
    logger.info(f"Run manifest exported to {manifest_path}")
    return manifest_path


def _describe_file(path: str) -> Dict[str, str]:
    if os.path.isfile(path):
        return {"path": path, "sha256": file_sha256(path)}
    return {"path": path, "sha256": None}


def export_report_to_markdown(title: str, sections: List[Dict], output_path: str = None) -> str:
    """
    Render a short markdown report (used by the demo walkthrough).

    Args:
        title (str): Report title
        sections (list): Dicts with 'heading' and either 'text' or 'rows'
        output_path (str): Optional path to write the report to

    Returns:
        str: Markdown content
    """
    content = f"# {title}\n\n"
    for section in sections:
        content += f"## {section.get('heading', 'Section')}\n\n"
        if section.get("text"):
            content += f"{section['text']}\n\n"
        for key, value in section.get("rows", []):
            content += f"- **{key}**: {value}\n"
        if section.get("rows"):
            content += "\n"

    if output_path:
        with atomic_write(output_path) as f:
            f.write(content)
        logger.info(f"Report exported to {output_path}")
    return content
