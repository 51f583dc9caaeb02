import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'spectrum.settings')
django.setup()
