#!/usr/bin/env python
"""Entry point of the pipeline commands (synthgen, split, ..., pipeline)."""
import os
import sys


def main():
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'backend.settings')
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError(
            "No se pudo importar Django. Instale las dependencias con "
            "'pip install -r requirements.txt' dentro del entorno virtual."
        ) from exc
    execute_from_command_line(sys.argv)


if __name__ == '__main__':
    main()
