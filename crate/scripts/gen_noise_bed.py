"""Synthesize the bundled ambient cafe-like noise bed.

Pink-ish rumble, a murmur of overlapping formant-free voices and occasional
cup clinks. Fully procedural; output is mono 16-bit PCM at 22050 Hz.
"""

import math
import random
import sys
import wave
from array import array

RATE = 22050
SECONDS = 12


def main(path):
    rnd = random.Random(20240611)
    n = RATE * SECONDS
    out = [0.0] * n

    # Pink-ish noise via Paul Kellet's filter.
    b = [0.0] * 6
    for i in range(n):
        w = rnd.uniform(-1, 1)
        b[0] = 0.99886 * b[0] + w * 0.0555179
        b[1] = 0.99332 * b[1] + w * 0.0750759
        b[2] = 0.96900 * b[2] + w * 0.1538520
        b[3] = 0.86650 * b[3] + w * 0.3104856
        b[4] = 0.55000 * b[4] + w * 0.5329522
        b[5] = -0.7616 * b[5] - w * 0.0168980
        out[i] = 0.05 * sum(b)

    # Murmur: several voices with wandering pitch and syllabic envelopes.
    for _ in range(8):
        f0 = rnd.uniform(95, 230)
        syl = rnd.uniform(3, 6)
        phase = 0.0
        start = rnd.uniform(0, 2 * math.pi)
        amp = rnd.uniform(0.01, 0.025)
        for i in range(n):
            t = i / RATE
            f = f0 * (1 + 0.08 * math.sin(2 * math.pi * 0.7 * t + start))
            phase += 2 * math.pi * f / RATE
            env = max(0.0, math.sin(2 * math.pi * syl * t + start)) ** 2
            out[i] += amp * env * (math.sin(phase) + 0.5 * math.sin(2 * phase) + 0.3 * math.sin(3 * phase))

    # Clinks: short decaying high partials.
    for _ in range(SECONDS * 2):
        at = rnd.randrange(n - RATE // 4)
        f = rnd.uniform(2500, 4500)
        amp = rnd.uniform(0.05, 0.15)
        for k in range(RATE // 4):
            out[at + k] += amp * math.exp(-k / (RATE * 0.03)) * math.sin(2 * math.pi * f * k / RATE)

    peak = max(abs(v) for v in out)
    pcm = array("h", (int(round(v / peak * 0.5 * 32767)) for v in out))
    with wave.open(path, "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(RATE)
        w.writeframes(pcm.tobytes())


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "crates/core/assets/noise/cafe_ambience.wav")
