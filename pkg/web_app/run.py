#!/usr/bin/env python3
"""
Run the descaug web application
"""

import os
import sys
from pathlib import Path

import uvicorn
from dotenv import load_dotenv

# Add the project root to Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

if __name__ == "__main__":
    load_dotenv()
    port = int(os.environ.get("PORT", "8000"))
    print("🚀 Starting descaug web application...")
    print(f"📊 API documentation at: http://localhost:{port}/docs")
    print("🛑 Press Ctrl+C to stop the server")
    print()

    uvicorn.run(
        "web_app.main:app",
        host="0.0.0.0",
        port=port,
        reload=True,
        log_level="info"
    )
