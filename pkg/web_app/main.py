"""
HTTP front-end over the descaug core: descriptor analysis of uploaded WAV files
and caption composition/parsing.
"""

import sys
from pathlib import Path
from typing import Dict, Optional, Union

from fastapi import FastAPI, File, Form, HTTPException, UploadFile
from pydantic import BaseModel, Field
from rich.console import Console
from starlette.concurrency import run_in_threadpool

# The core package lives one directory up
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from descaug import __version__  # noqa: E402
from descaug.audio_io import decode_wav  # noqa: E402
from descaug.captions import compose_prompt, format_caption, parse_caption, record_for  # noqa: E402
from descaug.config import ThresholdConfig  # noqa: E402
from descaug.descriptors import analyze  # noqa: E402
from descaug.errors import AppError, ErrorType  # noqa: E402

app = FastAPI(title="descaug", version=__version__)

console = Console()

MAX_FILE_SIZE = 50 * 1024 * 1024  # 50MB
THRESHOLDS = ThresholdConfig()

# Errors that mean the upload itself is bad rather than the request shape
_BAD_AUDIO = {ErrorType.DECODE_ERROR, ErrorType.UNSUPPORTED_FORMAT, ErrorType.INVALID_INPUT}


class FormatRequest(BaseModel):
    coarse: str
    descriptors: Dict[str, Union[str, float]] = Field(default_factory=dict)


class ParseRequest(BaseModel):
    caption: str


def _unprocessable(error: AppError) -> HTTPException:
    return HTTPException(status_code=422, detail=error.to_dict())


@app.get("/health")
async def health_check():
    return {"status": "healthy", "message": "descaug web app is running", "version": __version__}


@app.post("/analyze")
async def analyze_upload(file: UploadFile = File(...), coarse_caption: Optional[str] = Form(None)):
    console.print(f"[blue]POST /analyze - File: {file.filename}[/blue]")

    if not file.filename:
        raise HTTPException(status_code=400, detail="No file provided")
    if Path(file.filename).suffix.lower() != ".wav":
        raise HTTPException(status_code=400, detail=f"Unsupported file type: {Path(file.filename).suffix}")

    content = await file.read()
    if len(content) > MAX_FILE_SIZE:
        raise HTTPException(
            status_code=413,
            detail=f"File too large. Maximum size is {MAX_FILE_SIZE // (1024 * 1024)}MB. "
                   f"Use the CLI for larger files."
        )
    if not content:
        raise HTTPException(status_code=400, detail="Empty file provided")

    try:
        buf = decode_wav(content)
        ds = await run_in_threadpool(analyze, buf, THRESHOLDS)
    except AppError as e:
        console.print(f"[red]Error analyzing {file.filename}: {e}[/red]")
        if e.error_type in _BAD_AUDIO:
            raise HTTPException(status_code=400, detail=e.to_dict())
        raise HTTPException(status_code=500, detail=e.to_dict())

    result = {"filename": file.filename, "descriptors": ds.to_dict()}
    if coarse_caption:
        try:
            result["caption"] = format_caption(record_for(coarse_caption, ds))
        except AppError as e:
            raise _unprocessable(e)
    return result


@app.post("/caption/format")
async def format_endpoint(request: FormatRequest):
    try:
        return {"caption": compose_prompt(request.coarse, **request.descriptors)}
    except AppError as e:
        raise _unprocessable(e)


@app.post("/caption/parse")
async def parse_endpoint(request: ParseRequest):
    try:
        return parse_caption(request.caption).to_dict()
    except AppError as e:
        raise _unprocessable(e)


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=8000)
