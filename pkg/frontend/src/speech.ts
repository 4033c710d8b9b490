// Optional browser speech capture. Text input is first-class; transcribed
// speech feeds the exact same command path.

export function isSpeechSupported(): boolean {
  if (typeof window === 'undefined') return false;
  return 'SpeechRecognition' in window || 'webkitSpeechRecognition' in window;
}

export function startSpeechCapture(onTranscript: (text: string) => void): (() => void) | null {
  if (!isSpeechSupported()) {
    return null;
  }
  const Recognition =
    (window as any).SpeechRecognition || (window as any).webkitSpeechRecognition;
  const recognition = new Recognition();
  recognition.continuous = true;
  recognition.interimResults = false;
  recognition.onresult = (event: any) => {
    const result = event.results[event.results.length - 1];
    if (result.isFinal) {
      onTranscript(result[0].transcript.trim());
    }
  };
  recognition.start();
  return () => recognition.stop();
}
