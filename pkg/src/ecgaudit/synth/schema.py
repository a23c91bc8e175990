"""Lead order and the 24-class beat segmentation schema.

Leads follow the standard clinical order; the first six are limb leads
(four of which are linear combinations of I and II), the last six
precordial. The segmentation schema interleaves 12 fiducial points
(length-1 classes in generated annotations) with the 12 segments between
them, in their order of appearance within one beat. The trailing `tp`
segment also covers everything outside annotated beats.
"""

SAMPLE_RATE = 100  # Hz

LEADS = ("I", "II", "III", "aVR", "aVL", "aVF",
         "V1", "V2", "V3", "V4", "V5", "V6")
LEAD_INDEX = {name: i for i, name in enumerate(LEADS)}

# generated channels; the other four limb leads are derived
SOURCE_CHANNELS = ("I", "II", "V1", "V2", "V3", "V4", "V5", "V6")

SEGMENT_CLASSES = (
    "p_onset",    # 0  point
    "p_rise",     # 1  p-onset .. p-peak
    "p_peak",     # 2  point
    "p_fall",     # 3  p-peak .. p-offset
    "p_offset",   # 4  point
    "pq",         # 5  p-offset .. qrs-onset
    "qrs_onset",  # 6  point
    "q_fall",     # 7  qrs-onset .. q-peak
    "q_peak",     # 8  point
    "qr",         # 9  q-peak .. r-peak
    "r_peak",     # 10 point
    "rs",         # 11 r-peak .. s-peak
    "s_peak",     # 12 point
    "s_rise",     # 13 s-peak .. qrs-offset
    "qrs_offset", # 14 point
    "ql",         # 15 qrs-offset .. l-point
    "l_point",    # 16 point (ST junction)
    "lt",         # 17 l-point .. t-onset
    "t_onset",    # 18 point
    "t_rise",     # 19 t-onset .. t-peak
    "t_peak",     # 20 point
    "t_fall",     # 21 t-peak .. t-offset
    "t_offset",   # 22 point
    "tp",         # 23 t-offset .. next p-onset (and outside beats)
)
SEGMENT_INDEX = {name: i for i, name in enumerate(SEGMENT_CLASSES)}
N_SEGMENT_CLASSES = len(SEGMENT_CLASSES)

POINT_CLASSES = tuple(name for name in SEGMENT_CLASSES
                      if name.endswith(("_onset", "_offset", "_peak", "_point")))

# fiducial points in beat order; the keys of a beat's fiducial dict
FIDUCIALS = ("p_onset", "p_peak", "p_offset", "qrs_onset", "q_peak", "r_peak",
             "s_peak", "qrs_offset", "l_point", "t_onset", "t_peak", "t_offset")
