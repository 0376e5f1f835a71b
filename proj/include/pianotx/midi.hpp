#pragma once

#include <string>
#include <vector>

namespace pianotx {

// Note-level representation shared by decoding, MIDI I/O, and evaluation.
struct NoteEvent {
  int pitch = 0;        // MIDI note number, piano range 21..108
  double onset_s = 0.0;
  double offset_s = 0.0;
  int velocity = 0;  // 1..127

  bool valid() const {
    return pitch >= 21 && pitch <= 108 && onset_s >= 0.0 && offset_s > onset_s &&
           velocity >= 1 && velocity <= 127;
  }
};

// Standard MIDI file (format 0 or 1) to note events. Note-on/note-off pairs
// resolve FIFO per pitch, velocity-0 note-ons close notes, and the tempo map
// converts ticks to seconds. Dangling note-ons close at track end with a
// warning; pitches outside the piano range are skipped with a warning.
std::vector<NoteEvent> parse_midi(const std::vector<unsigned char>& bytes);
std::vector<NoteEvent> read_midi(const std::string& path);

// Format-0 file at 480 ticks per quarter, fixed 120 bpm. Round-trips through
// parse_midi within one tick (~1.04 ms).
std::vector<unsigned char> notes_to_midi(const std::vector<NoteEvent>& notes);
void write_midi(const std::string& path, const std::vector<NoteEvent>& notes);

// Line-oriented table (onset_s, offset_s, pitch, velocity), one note per line.
std::string notes_to_table(const std::vector<NoteEvent>& notes);

}  // namespace pianotx
