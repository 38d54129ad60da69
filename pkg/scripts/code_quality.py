#!/usr/bin/env python3
"""
Code quality tools for the FabuLight-ASD toolkit.

Formatting, linting, unused-import cleaning and the test suite behind one
entry point.
"""

import subprocess
import sys
from pathlib import Path

CODE_PATHS = [
    "app/",
    "config/",
    "core/",
    "db/",
    "graph/",
    "scripts/",
    "services/",
    "tests/",
    "main.py",
]

REQUIRED_TOOLS = [
    ("black", "Black code formatter"),
    ("isort", "Import sorter"),
    ("flake8", "Python linter"),
    ("mypy", "Static type checker"),
    ("pytest", "Test runner"),
]


def run_command(cmd, description="", cwd=None):
    """Run a command and report its output."""
    if cwd is None:
        cwd = Path(__file__).parent.parent

    print(f"\n{'='*60}")
    print(f"Running: {description}")
    print(f"Command: {' '.join(cmd)}")
    print(f"{'='*60}")

    try:
        result = subprocess.run(cmd, cwd=cwd, check=True, capture_output=True, text=True)
        if result.stdout:
            print(result.stdout)
        if result.stderr:
            print("STDERR:", result.stderr)
        print(f"{description} completed successfully")
        return True
    except subprocess.CalledProcessError as e:
        print(f"{description} failed (exit code {e.returncode})")
        if e.stdout:
            print("STDOUT:", e.stdout)
        if e.stderr:
            print("STDERR:", e.stderr)
        return False


def check_tools():
    """Check that every development tool is installed."""
    missing = []
    for tool, description in REQUIRED_TOOLS:
        try:
            subprocess.run([tool, "--version"], capture_output=True, check=True)
        except (subprocess.CalledProcessError, FileNotFoundError):
            missing.append(f"{tool} ({description})")

    if missing:
        print("Missing tools:")
        for tool in missing:
            print(f"  - {tool}")
        print("\nInstall with: pip install -r requirements-dev.txt")
        return False
    return True


def format_code():
    if not check_tools():
        return False
    sorted_ok = run_command(["isort", *CODE_PATHS], "Import sorting")
    formatted_ok = run_command(["black", *CODE_PATHS], "Black code formatting")
    return sorted_ok and formatted_ok


def lint_code():
    if not check_tools():
        return False
    success = run_command(["flake8", "--max-line-length", "100", *CODE_PATHS], "Flake8 linting")
    # advisory only
    run_command(["mypy", "--ignore-missing-imports", *CODE_PATHS], "MyPy type checking")
    return success


def clean_imports():
    if not format_code():
        return False
    if subprocess.run(["autoflake", "--version"], capture_output=True).returncode != 0:
        print("autoflake not installed - skipping unused import removal")
        return True
    return run_command(
        [
            "autoflake",
            "--in-place",
            "--remove-unused-variables",
            "--remove-all-unused-imports",
            "--recursive",
            *CODE_PATHS,
        ],
        "Autoflake unused import removal",
    )


def run_tests(include_slow=False):
    cmd = ["pytest", "--cov=app", "--cov=core", "--cov=graph", "--cov=services"]
    if include_slow:
        cmd += ["-m", ""]
    return run_command(cmd, "Test suite" + (" (including slow tests)" if include_slow else ""))


def run_quality_checks():
    if not check_tools():
        return False
    results = [format_code(), lint_code(), run_tests()]
    print("All code quality checks passed" if all(results) else "Some code quality checks failed")
    return all(results)


COMMANDS = {
    "format": (format_code, "Format code with Black and sort imports"),
    "lint": (lint_code, "Lint code with flake8 and mypy"),
    "clean": (clean_imports, "Remove unused imports and reformat"),
    "test": (run_tests, "Run the fast test suite with coverage"),
    "test-all": (lambda: run_tests(include_slow=True), "Run every test including slow ones"),
    "quality": (run_quality_checks, "Format, lint and test"),
    "check-tools": (check_tools, "Check that all tools are installed"),
}


def show_help():
    print("Code quality tools - available commands:\n")
    for name, (_, description) in COMMANDS.items():
        print(f"  {name:<14}{description}")
    print("\nExample: python3 scripts/code_quality.py quality")
    return True


def main():
    if len(sys.argv) < 2 or sys.argv[1] == "help":
        show_help()
        return 1 if len(sys.argv) < 2 else 0

    command = sys.argv[1]
    if command not in COMMANDS:
        print(f"Unknown command: {command}")
        show_help()
        return 1
    return 0 if COMMANDS[command][0]() else 1


if __name__ == "__main__":
    sys.exit(main())
