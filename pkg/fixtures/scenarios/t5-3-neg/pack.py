import os
import shutil

print(shutil.make_archive('backup', 'zip', os.getcwd()))
