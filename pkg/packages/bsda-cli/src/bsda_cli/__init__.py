# Package marker for the BSDA-Net command-line interface.
