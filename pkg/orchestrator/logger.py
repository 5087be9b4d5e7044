"""
Logger Module
=============
Sets up logging for the OrtSAE toolkit with both file and console output.

Each pipeline stage gets its own named logger:
- pipeline: experiment orchestration (logs/pipeline.log)
- train:    optimization loop and checkpoints (logs/train.log)
- eval:     metrics, MetaSAE and decompositions (logs/eval.log)
- data:     synthetic world generation and activation files (logs/data.log)

Usage:
    from orchestrator.logger import setup_logger
    logger = setup_logger("train", "logs/train.log")
    logger.info("step 100 | mse 0.0123")
"""

import logging
import os


LOG_FORMAT = "%(asctime)s | %(name)s | %(levelname)s | %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


def setup_logger(name: str, log_file: str = None) -> logging.Logger:
    """
    Create and configure a logger with file and console handlers.

    Args:
        name: Name of the logger (usually the stage name)
        log_file: Path to the log file (optional, will create if provided)

    Returns:
        logging.Logger: Configured logger instance

    Example:
        >>> logger = setup_logger("train", "logs/train.log")
        >>> logger.info("Starting training...")
    """
    logger = logging.getLogger(name)
    logger.setLevel(logging.DEBUG)

    # Prevent duplicate handlers if logger already exists
    if logger.handlers:
        return logger

    # Format: 2024-01-15 10:30:45 | train | INFO | step 100 | mse 0.0123
    formatter = logging.Formatter(fmt=LOG_FORMAT, datefmt=DATE_FORMAT)

    # -------------------------------------------------------------------------
    # Console Handler - Displays logs in terminal
    # -------------------------------------------------------------------------
    console_handler = logging.StreamHandler()
    console_handler.setLevel(logging.INFO)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    # -------------------------------------------------------------------------
    # File Handler - Saves logs to file (if path provided)
    # -------------------------------------------------------------------------
    if log_file:
        log_dir = os.path.dirname(log_file)
        if log_dir:
            os.makedirs(log_dir, exist_ok=True)

        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    return logger


def get_pipeline_logger() -> logging.Logger:
    """Get the experiment pipeline logger (logs/pipeline.log)."""
    return setup_logger("pipeline", "logs/pipeline.log")


def get_train_logger() -> logging.Logger:
    """
    Get the training logger.

    This logger writes to logs/train.log: one line per metrics row,
    checkpoint writes and aborts.

    Returns:
        logging.Logger: The train logger
    """
    return setup_logger("train", "logs/train.log")


def get_eval_logger() -> logging.Logger:
    """
    Get the evaluation logger.

    Used by the metric suite, the MetaSAE composition pipeline and the
    cross-model comparisons.

    Returns:
        logging.Logger: The eval logger
    """
    return setup_logger("eval", "logs/eval.log")


def get_data_logger() -> logging.Logger:
    """Get the data logger (synthetic worlds and activation files)."""
    return setup_logger("data", "logs/data.log")
