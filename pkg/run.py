#!/usr/bin/env python3
"""
Script to run the FastAPI service of the GMAC toolkit.
"""
import sys
import time
import threading
import subprocess
import webbrowser
import argparse

def run_backend(host, port, reload):
    """Run the FastAPI backend."""
    print(f"Starting FastAPI backend on http://{host}:{port}...")

    command = [sys.executable, "-m", "uvicorn", "api.main:app", "--host", host, "--port", str(port)]
    if reload:
        command.append("--reload")
    subprocess.run(command)

def open_browser(port):
    """Open the interactive API docs after a short delay."""
    time.sleep(3)
    webbrowser.open(f"http://localhost:{port}/docs")

def main():
    parser = argparse.ArgumentParser(description="Run the GMAC shaping API")
    parser.add_argument("--host", default="0.0.0.0")
    parser.add_argument("--port", type=int, default=8000)
    parser.add_argument("--reload", action="store_true", help="Reload on code changes")
    parser.add_argument("--no-browser", action="store_true", help="Don't open the browser automatically")

    args = parser.parse_args()

    if not args.no_browser:
        threading.Thread(target=open_browser, args=(args.port,), daemon=True).start()
    run_backend(args.host, args.port, args.reload)

if __name__ == "__main__":
    main()
