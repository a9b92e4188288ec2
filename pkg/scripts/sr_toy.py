"""x4 super-resolution of translating-texture clips against bicubic upsampling."""
from _common import configure, parser, printer, report

from toflow.experiments import SRToyConfig, run_sr_toy

if __name__ == "__main__":
    args = parser(__doc__, SRToyConfig()).parse_args()
    res = report(run_sr_toy(configure(SRToyConfig(), args), log=printer(args)), args)
    print(f"joint - bicubic         = {res['joint'] - res['bicubic']:+.2f} dB")
