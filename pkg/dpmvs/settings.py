from dotenv import load_dotenv
import os

load_dotenv()

# App Stuff
APP_NAME = "dpmvs"
APP_VERSION = "0.1.0"

# Output Stuff
OUT_DIR = os.getenv("DPMVS_OUT_DIR", "runs")
SAMPLE_FORMAT = os.getenv("DPMVS_SAMPLE_FORMAT", "csv")

# Worker Stuff
WORKERS = int(os.getenv("DPMVS_WORKERS", str(os.cpu_count() or 1)))

# Logging Stuff
LOG_LEVEL = os.getenv("DPMVS_LOG_LEVEL", "INFO")
