from pathlib import Path


def atomic_write(file_contents: str, target_file_path: Path) -> None:
    """Write `file_contents` next to the target and swap it into place, so a report is never half written."""
    target_file_path.parent.mkdir(parents=True, exist_ok=True)
    # if target path is a symlink, we want to use the real path as the replacement target,
    # otherwise we'd just be overwriting the symlink
    target_file_path = target_file_path.resolve()
    temp_file_path = target_file_path.with_suffix(f"{target_file_path.suffix}.fracneumann~")
    try:
        temp_file_path.write_text(file_contents, encoding="utf-8")
        temp_file_path.replace(target_file_path)
    finally:
        temp_file_path.unlink(missing_ok=True)
